"""Phase retrieval for coherent diffractive imaging by indirect diffeomorphic registration."""
__version__ = "0.1.0"
