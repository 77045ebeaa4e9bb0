"""Synthetic attribute world: scenes, embeddings, captions, oracle dialogs and grammar checks."""
