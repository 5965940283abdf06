"""Service layer: descriptors, statistics and phantom generation."""
