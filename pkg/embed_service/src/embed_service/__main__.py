from .server import serve


def main():
    serve()


if __name__ == "__main__":
    main()
