""" Environment-backed settings, numerical constants and logging setup """
