async def main():
    import asyncio
