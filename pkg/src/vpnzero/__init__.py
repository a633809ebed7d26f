"""Decentralized VPN with zero-knowledge whitelist attestation."""

__version__ = "0.1.0"
