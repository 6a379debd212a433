"""Molecule-caption alignment toolchain: SMILES engine, retrieval, LLM stages, datasets, metrics."""

__version__ = "0.1.0"
