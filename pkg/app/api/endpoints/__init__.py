""" Command implementations registered by main.py """
