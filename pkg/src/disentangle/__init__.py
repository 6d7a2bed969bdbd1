"""Spontaneous disentanglement dynamics for Hubbard rings."""
