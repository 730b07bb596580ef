"""Statement-level vulnerability localization toolkit.

Pipeline: MiniC sources -> code property graphs -> token embeddings ->
graph/sequence node-scoring models -> ensembled localization predictions.
"""

__version__ = "0.1.0"
