from hfseason.cli import main

main()
