"""Django configuration package for the madf dialog-agent toolkit."""
