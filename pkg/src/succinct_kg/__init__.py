"""Self-indexed succinct RDF store with interval-based RDFS reasoning."""

__version__ = "0.1.0"
