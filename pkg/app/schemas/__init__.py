""" Validated records exchanged between services, the CLI and result files """
