"""EDM-based 3D acoustic source localization with an SRP-PHAT baseline."""

__version__ = "0.1.0"
