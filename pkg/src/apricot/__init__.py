"""Apricot variety grading from three-view silhouettes: synthetic imaging,
feature extraction, mass modelling and MLP / RBF / ANFIS classifiers."""

__version__ = "0.1.0"
