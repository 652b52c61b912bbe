#include <cstdio>

int main() {
    std::puts("tradesim: subcommands not wired up yet");
    return 0;
}
