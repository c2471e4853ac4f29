"""Predicate-guided parametric fuzzing toolkit.

Pieces: a byte-stream decoder abstraction (stream), dominance analysis over
interprocedural control-flow graphs (cfg), weighted-grammar input generators
(generation) for three demo targets (targets), a coverage-guided campaign
engine (engine), per-predicate dynamic accounting (predicates), a feedback
refinement loop (refine), rank statistics (stats) and a CLI (cli).
"""

__version__ = "0.1.0"
