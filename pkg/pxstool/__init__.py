"""PXS command line tool"""
from .cli import main, build_parser
from .report import ReportWriter, read_reports

__all__ = ['main', 'build_parser', 'ReportWriter', 'read_reports']
