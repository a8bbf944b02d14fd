from vecoffload.cli import main

main()
