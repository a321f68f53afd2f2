import os


class Config:
    # Console logging: print one line every N epochs (0 keeps epochs quiet)
    LOG_EVERY = int(os.getenv("HIRE_LOG_EVERY", "0"))

    # Sweep / ablation fan-out
    SWEEP_WORKERS = int(os.getenv("HIRE_SWEEP_WORKERS", "1"))

    OUT_DIR = os.getenv("HIRE_OUT_DIR", "runs")

    # Model defaults
    HIDDEN_DIM = int(os.getenv("HIRE_HIDDEN_DIM", "16"))

    # Clustering evaluation
    KMEANS_RESTARTS = int(os.getenv("HIRE_KMEANS_RESTARTS", "10"))
    KMEANS_MAX_ITERS = int(os.getenv("HIRE_KMEANS_MAX_ITERS", "300"))

    CHECKPOINT_VERSION = 1
