"""
    unisort: unimodal relaxation of the sort operator, Plackett-Luce estimators and desk-scale tasks
"""
