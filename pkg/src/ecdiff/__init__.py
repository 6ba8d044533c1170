"""Synchronization differences between two versions of a concurrent program."""
