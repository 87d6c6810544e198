"""Interpretable ECG classification with semi-orthogonal 1-D CNNs.

The package covers the full chain: preprocessing and synthetic data
(:mod:`ecgxai.signal`), a numpy 1-D CNN with semi-orthogonal kernels
(:mod:`ecgxai.convnet`), its deconvolutional inversion
(:mod:`ecgxai.inversion`), Chi-squared saliency maps and ROAR
(:mod:`ecgxai.saliency`), K-shape presence features and kernel PCA
(:mod:`ecgxai.shapefeat`), SMOTEENN (:mod:`ecgxai.resample`), metrics
(:mod:`ecgxai.evalmetrics`) and the logistic model with its tests
(:mod:`ecgxai.glm`).
"""

__version__ = "0.1.0"
