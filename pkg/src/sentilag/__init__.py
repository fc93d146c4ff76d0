"""Sentiment-driven next-day stock forecasting toolkit.

Pipeline stages: ingest post/stock files, split posting users into a
credentialed (AFA) and a remaining (UFA) group, label post sentiment,
aggregate per-day sentiment, pick the lead-lag window by Pearson
correlation, train a two-layer LSTM regressor on (open price, lagged
sentiment) pairs, and score the resulting trend predictions.
"""

__version__ = "0.1.0"
