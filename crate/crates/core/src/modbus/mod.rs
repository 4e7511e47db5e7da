//! Modbus TCP link to the force device.

pub mod client;
pub mod codec;
pub mod registers;
pub mod server;

pub use client::{ClientError, LoopbackTransport, ModbusClient, RegisterTransport};
pub use codec::{
    decode_request, decode_response, encode_request, encode_response, CodecError, ExceptionCode, Frame,
    FunctionCode, Request, Response,
};
pub use registers::{AcfDevice, AcfInputs, RegisterDef, RegisterKind, REGISTER_TABLE};
pub use server::{handle_request, ModbusServer, SharedDevice};
