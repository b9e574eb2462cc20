"""imo: a desk-scale model-sharing network.

Content-addressed model registry, output cache with similar-request
suggestions, workflow graphs, assignment planning with optimal-path
records, mock execution and co-training, a GPU compute simulator, and a
hash-chained revenue ledger, all behind one HTTP gateway and CLI.
"""

__version__ = "0.1.0"
