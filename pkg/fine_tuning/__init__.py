"""Adaptive fine-tuning: schedule controller, toy tagger, corpora, metrics, statistics and runner."""
