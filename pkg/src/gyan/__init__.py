"""Gyan: a symbolic language-understanding engine.

Documents are encoded into layered, fully traceable meaning-representation
graphs (GMRs) grounded in a decoupled knowledge net.  Typed queries run as
deductive-closure-aware subgraph searches over those graphs and yield
extractive, verbatim-traceable answers.
"""

__version__ = "0.1.0"
