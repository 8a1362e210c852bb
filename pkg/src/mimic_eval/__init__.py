"""Persona-imitation evaluation harness: chat dataset preparation and pairwise LLM-judge scoring."""

__version__ = "0.1.0"
