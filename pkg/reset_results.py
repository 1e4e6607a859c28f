from qroute import models  # noqa: F401
from qroute.database import DATABASE_URL, Base, make_engine


def reset_results():
    """Drop and recreate all result tables"""
    engine = make_engine(DATABASE_URL)

    print(f"Dropping result tables in {DATABASE_URL} ...")
    Base.metadata.drop_all(bind=engine)

    print("Creating fresh tables ...")
    Base.metadata.create_all(bind=engine)

    print("\nTables created:")
    for name in Base.metadata.tables:
        print(f"  - {name}")

    engine.dispose()


if __name__ == "__main__":
    reset_results()
