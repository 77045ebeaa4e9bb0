"""Supervised pretraining, curriculum self-play and community-regularized pools."""
