"""Size-aware graph data augmentation.

Per-class autoregressive generators (a recurrent generator for small graphs,
a block-wise attention generator for large ones) produce label-consistent
synthetic graphs that are mixed into the training set of graph classifiers.
"""

__version__ = "0.1.0"
