"""Domain types: fundamental diagrams, information packages, scenario and output schemas."""
