"""Key exposure, loop handling and the oracle-guided SAT attack."""
