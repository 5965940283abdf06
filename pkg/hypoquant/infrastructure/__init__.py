"""Infrastructure layer for file formats and reports."""
