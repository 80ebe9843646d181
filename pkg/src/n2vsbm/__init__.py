"""node2vec embeddings for community detection on (degree-corrected) stochastic block models."""
__version__ = "0.1.0"
