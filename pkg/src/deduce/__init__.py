"""Multi-omics subtype clustering: shared-weight attention encoder, decoupled contrastive training, k-means evaluation."""

__version__ = "0.1.0"
