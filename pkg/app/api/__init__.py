"""
    CLI layer: one module per command under endpoints, shared option handling in dependencies
"""
