from dmt import process

process.setup()

from dmt.cli import main

main()
