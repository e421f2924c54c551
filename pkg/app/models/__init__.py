"""Domain models: DNA codec, fountain coding, synthesis, ledger, cluster and contract."""
