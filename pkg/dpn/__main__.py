from dpn.cli.main import app

app(prog_name="dpn")
