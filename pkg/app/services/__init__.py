"""
    Numerical services: relaxation, autodiff, Plackett-Luce, losses, models, training and validation
"""
