"""Finite-element spectra of interacting particles on metric graphs."""
