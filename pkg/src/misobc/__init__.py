"""Downlink MISO multiple-access simulator: NOMA, MU-LP, rate-splitting and OMA."""
