"""Second-order federated learning over a simulated fading uplink."""

__version__ = "0.1.0"
