"""nids-xray: explainability test bench for packet-level anomaly detectors.

The package turns a packet trace into a per-packet feature matrix of
damped streaming statistics, trains an autoencoder-ensemble anomaly
detector on a benign prefix, and then interrogates the trained model:
decision-tree surrogates with fidelity scores, Kernel SHAP feature
attributions, agreement between the two explanation routes, and a
timestamp-tampering probe that measures how much the detector relies on
raw packet rate.
"""

__version__ = "0.1.0"
