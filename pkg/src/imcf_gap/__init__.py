"""Weak inverse mean curvature flow on symmetric model 3-manifolds."""
