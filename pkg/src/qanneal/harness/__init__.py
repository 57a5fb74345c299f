"""Experiment configuration, seeded RNG streams, slope fits and the experiment registry."""
