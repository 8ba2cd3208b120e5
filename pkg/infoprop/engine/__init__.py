"""Link, node and network simulation engines."""
