#include <iostream>

#include "ndeepc_app/commands.hpp"

int main(int argc, char **argv) { return ndeepc::app::run_cli(argc, argv, std::cout, std::cerr); }
