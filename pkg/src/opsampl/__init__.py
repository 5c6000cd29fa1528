"""Sampling of operators: identification of time-variant channels by periodically weighted delta trains."""
