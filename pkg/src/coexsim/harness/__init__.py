"""Scenario engine, dataset generation, model evaluation, and the CLI."""
