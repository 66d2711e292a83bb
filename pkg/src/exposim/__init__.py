"""Offline feedback-loop simulator for exposure fairness in dynamic recommendation."""
