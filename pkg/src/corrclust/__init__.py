"""Correlation clustering with l_q objectives."""
