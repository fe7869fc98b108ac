"""Vessel path classification from port-to-port voyage tracks.

Two routes to a path label: cluster the matrix of average nearest-neighbour
distances between voyages, or fit per-segment Gaussian mixtures and map
each voyage's segment signature to a class.
"""
__version__ = "0.1.0"
