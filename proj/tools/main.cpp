#include <iostream>

#include "cli.hpp"
#include "gazevit/allocator.hpp"

int main(int argc, char** argv) {
    gazevit::tune_allocator();
    std::vector<std::string> args(argv + 1, argv + argc);
    return gazevit::cli::run_cli(args, std::cout, std::cerr);
}
