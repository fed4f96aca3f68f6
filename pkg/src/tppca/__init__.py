"""Tangent phylogenetic PCA for manifold-valued data on phylogenetic trees."""
