"""Parse-focused PCFG induction: tabular grammars, span-weighted EM, decoding and analysis."""

__version__ = "0.1.0"
