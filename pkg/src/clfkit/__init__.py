"""CLF and Meta-CLF checking, execution and trace algebra."""
