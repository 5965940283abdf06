"""Domain layer containing entities and base exceptions."""
