# Core module for configuration and error types
