#include <iostream>

#include "vlasov/cli.hpp"

int main(int argc, char** argv) { return vlasov::run_cli(argc, argv, std::cout, std::cerr); }
