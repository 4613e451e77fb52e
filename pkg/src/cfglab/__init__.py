"""cfglab: a laboratory for leveled context-free grammars.

Grammar synthesis and validation, annotated sampling, chart parsing,
training-corpus packing, generation/diversity/marginal evaluation,
observable-token extensions, data perturbations, position-attention
probing, and attention-pattern statistics, plus the binary formats that
connect the toolkit to an external model trainer.
"""

__version__ = "0.1.0"
