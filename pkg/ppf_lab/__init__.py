# This file makes ppf_lab a proper Python package
