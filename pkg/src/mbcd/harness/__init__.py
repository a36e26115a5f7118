"""Experiment harness: configs, runs, baselines, metrics and the CLI."""
