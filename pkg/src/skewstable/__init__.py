"""Symmetric stable processes perturbed at zero: resolvents, hitting and excursion synthesis."""
