"""Worker pool and pipeline orchestration."""
