"""Reverse-mode differentiation over dense float64 arrays, plus the LSTM cell and optimizers."""
