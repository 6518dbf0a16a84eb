"""Grid impact analysis and PV/storage/smart-charger mitigation for heavy-duty EV charging stations."""

__version__ = "0.1.0"
