from .cli_tools import main

main()
