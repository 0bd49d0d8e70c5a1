"""Usability auditing for fashion e-commerce sites.

Feature extraction from pages, K-means corpus labeling, an SMO-trained RBF
SVM on the textual features and a small CNN on homepage screenshots.
"""

__version__ = "0.1.0"
