"""Training loops, evaluation and the ablation runner."""
