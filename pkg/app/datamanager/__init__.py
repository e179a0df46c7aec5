"""
    Synthetic datasets, config / result files and the error hierarchy
"""
from app.datamanager.data_manager_files import FileDataManager
from app.datamanager.data_manager_interface import DataManagerInterface

__all__ = ["DataManagerInterface", "FileDataManager"]
