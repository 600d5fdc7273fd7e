"""Unsupervised anomaly detection for multivariate time series.

An adversarially trained LSTM generator/discriminator pair models normal
windows of sensor/actuator telemetry.  Test windows are mapped back into the
generator's latent space and flagged from a combined reconstruction-residual
and discrimination score.  CUSUM and PCA/SPE detectors are included as
reference baselines.
"""

__version__ = "0.1.0"
